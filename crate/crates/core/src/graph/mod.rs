//! The dynamic, multi-layer supply-chain graph.
//!
//! Nodes are supply-chain entities, edges are layered relationships carrying
//! a [`WeightVector`]. The graph changes only through an append-only log of
//! [`GraphDelta`]s held by a [`Timeline`]; a [`GraphSnapshot`] is the
//! materialized view at one tick.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::num::is_whole;
use crate::provenance::Provenance;

mod snapshot;
mod timeline;

pub use snapshot::{Direction, GraphSnapshot, LayerFilter, Neighbor};
pub use timeline::{SnapshotCursor, Timeline};

/// Discrete simulation time. Ticks carry no physical unit.
pub type Tick = u64;

/// Material quantities are whole units.
pub type Units = u64;

macro_rules! string_id {
    ($name:ident) => {
        #[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Self {
                Self(id.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_string())
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                Self(s)
            }
        }
    };
}

string_id!(NodeId);
string_id!(EdgeId);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityKind {
    Supplier,
    Manufacturer,
    Warehouse,
    Distributor,
    Customer,
}

impl EntityKind {
    pub const ALL: [EntityKind; 5] = [
        EntityKind::Supplier,
        EntityKind::Manufacturer,
        EntityKind::Warehouse,
        EntityKind::Distributor,
        EntityKind::Customer,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EntityKind::Supplier => "supplier",
            EntityKind::Manufacturer => "manufacturer",
            EntityKind::Warehouse => "warehouse",
            EntityKind::Distributor => "distributor",
            EntityKind::Customer => "customer",
        }
    }
}

impl fmt::Display for EntityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EntityKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EntityKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| alloc::format!("unknown entity kind `{s}`"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Material,
    Information,
    Financial,
}

impl LayerKind {
    pub const ALL: [LayerKind; 3] = [LayerKind::Material, LayerKind::Information, LayerKind::Financial];

    pub fn as_str(self) -> &'static str {
        match self {
            LayerKind::Material => "material",
            LayerKind::Information => "information",
            LayerKind::Financial => "financial",
        }
    }

    pub(crate) fn index(self) -> usize {
        match self {
            LayerKind::Material => 0,
            LayerKind::Information => 1,
            LayerKind::Financial => 2,
        }
    }
}

impl fmt::Display for LayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LayerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        LayerKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| alloc::format!("unknown layer `{s}`"))
    }
}

/// Operational state x_i(t) of a node.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StateVector {
    pub inventory: Units,
    pub backlog: Units,
    #[serde(default)]
    pub throughput_used: Units,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub custom: BTreeMap<String, f64>,
}

impl StateVector {
    pub fn with_inventory(inventory: Units) -> Self {
        Self {
            inventory,
            ..Self::default()
        }
    }
}

/// Per-entity operational attributes. Which ones are required depends on
/// the [`EntityKind`].
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NodeAttrs {
    /// Units per tick.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capacity: Option<Units>,
    /// Ticks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lead_time: Option<Tick>,
    /// Units per tick.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub demand_rate: Option<Units>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reliability: Option<f64>,
    /// kg CO2e per unit processed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub carbon_intensity: Option<f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub custom: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntityNode {
    pub id: NodeId,
    pub kind: EntityKind,
    pub label: String,
    #[serde(default)]
    pub state: StateVector,
    #[serde(default)]
    pub attrs: NodeAttrs,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub location: Option<[f64; 2]>,
}

impl EntityNode {
    pub fn new(id: impl Into<NodeId>, kind: EntityKind) -> Self {
        let id = id.into();
        Self {
            label: id.0.clone(),
            id,
            kind,
            state: StateVector::default(),
            attrs: NodeAttrs::default(),
            location: None,
        }
    }

    pub fn with_inventory(mut self, inventory: Units) -> Self {
        self.state.inventory = inventory;
        self
    }

    pub fn with_capacity(mut self, capacity: Units) -> Self {
        self.attrs.capacity = Some(capacity);
        self
    }

    pub fn with_demand_rate(mut self, rate: Units) -> Self {
        self.attrs.demand_rate = Some(rate);
        self
    }

    /// Checks the attribute bounds and the per-kind schema.
    pub fn validate(&self) -> Result<(), GraphError> {
        let bad = |field: &str, reason: &str| GraphError::InvalidAttribute {
            node: self.id.clone(),
            field: field.to_string(),
            reason: reason.to_string(),
        };
        if let Some(r) = self.attrs.reliability {
            if !(0.0..=1.0).contains(&r) {
                return Err(bad("reliability", "must be within [0, 1]"));
            }
        }
        if let Some(c) = self.attrs.carbon_intensity {
            if !c.is_finite() || c < 0.0 {
                return Err(bad("carbon_intensity", "must be finite and >= 0"));
            }
        }
        if self.attrs.custom.values().any(|v| !v.is_finite()) {
            return Err(bad("custom", "values must be finite"));
        }
        if self.state.custom.values().any(|v| !v.is_finite()) {
            return Err(bad("state.custom", "values must be finite"));
        }
        if let Some([x, y]) = self.location {
            if !x.is_finite() || !y.is_finite() {
                return Err(bad("location", "coordinates must be finite"));
            }
        }
        match self.kind {
            EntityKind::Customer if self.attrs.demand_rate.is_none() => {
                Err(bad("demand_rate", "required for customers"))
            }
            EntityKind::Manufacturer if self.attrs.capacity.is_none() => {
                Err(bad("capacity", "required for manufacturers"))
            }
            _ => Ok(()),
        }
    }
}

/// Weight attributes w_ij(t) of an edge.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    /// Currency per unit. Negative only on financial edges.
    pub cost_per_unit: f64,
    /// Ticks; at least one on material edges.
    pub transit_time: Tick,
    /// Units per tick.
    pub capacity: Units,
    pub reliability: f64,
    /// kg CO2e per unit.
    pub carbon_per_unit: f64,
}

impl Default for WeightVector {
    fn default() -> Self {
        Self {
            cost_per_unit: 0.0,
            transit_time: 1,
            capacity: 0,
            reliability: 1.0,
            carbon_per_unit: 0.0,
        }
    }
}

impl WeightVector {
    pub fn validate(&self, layer: LayerKind) -> Result<(), (&'static str, &'static str)> {
        if !self.cost_per_unit.is_finite() {
            return Err(("cost_per_unit", "must be finite"));
        }
        if self.cost_per_unit < 0.0 && layer != LayerKind::Financial {
            return Err(("cost_per_unit", "negative costs only on financial edges"));
        }
        if layer == LayerKind::Material && self.transit_time < 1 {
            return Err(("transit_time", "material edges need transit_time >= 1"));
        }
        if !(0.0..=1.0).contains(&self.reliability) {
            return Err(("reliability", "must be within [0, 1]"));
        }
        if !self.carbon_per_unit.is_finite() || self.carbon_per_unit < 0.0 {
            return Err(("carbon_per_unit", "must be finite and >= 0"));
        }
        Ok(())
    }

    /// Value of a weight used as a path length.
    pub fn key(&self, key: WeightKey) -> f64 {
        match key {
            WeightKey::CostPerUnit => self.cost_per_unit,
            WeightKey::TransitTime => self.transit_time as f64,
            WeightKey::CarbonPerUnit => self.carbon_per_unit,
        }
    }

    pub fn get(&self, field: EdgeField) -> f64 {
        match field {
            EdgeField::CostPerUnit => self.cost_per_unit,
            EdgeField::TransitTime => self.transit_time as f64,
            EdgeField::Capacity => self.capacity as f64,
            EdgeField::Reliability => self.reliability,
            EdgeField::CarbonPerUnit => self.carbon_per_unit,
        }
    }

    /// Sets one field, rejecting values that do not fit its type.
    pub fn set(&mut self, field: EdgeField, value: f64) -> Result<(), &'static str> {
        if !value.is_finite() {
            return Err("must be finite");
        }
        match field {
            EdgeField::CostPerUnit => self.cost_per_unit = value,
            EdgeField::TransitTime => self.transit_time = whole_units(value)?,
            EdgeField::Capacity => self.capacity = whole_units(value)?,
            EdgeField::Reliability => self.reliability = value,
            EdgeField::CarbonPerUnit => self.carbon_per_unit = value,
        }
        Ok(())
    }
}

fn whole_units(value: f64) -> Result<u64, &'static str> {
    if value < 0.0 || !is_whole(value) {
        Err("must be a non-negative whole number")
    } else {
        Ok(value as u64)
    }
}

/// Caller-selected edge weight used as path length.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightKey {
    CostPerUnit,
    TransitTime,
    CarbonPerUnit,
}

impl FromStr for WeightKey {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cost_per_unit" | "cost" => Ok(WeightKey::CostPerUnit),
            "transit_time" | "time" => Ok(WeightKey::TransitTime),
            "carbon_per_unit" | "carbon" => Ok(WeightKey::CarbonPerUnit),
            other => Err(alloc::format!("unknown weight key `{other}`")),
        }
    }
}

/// Half-open tick interval `[from, until)`; `until = None` is unbounded.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Validity {
    pub from: Tick,
    #[serde(default)]
    pub until: Option<Tick>,
}

impl Validity {
    pub const ALWAYS: Validity = Validity { from: 0, until: None };

    pub fn between(from: Tick, until: Tick) -> Self {
        Self {
            from,
            until: Some(until),
        }
    }

    pub fn covers(&self, tick: Tick) -> bool {
        tick >= self.from && self.until.is_none_or(|u| tick < u)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub id: EdgeId,
    pub src: NodeId,
    pub dst: NodeId,
    pub layer: LayerKind,
    pub weights: WeightVector,
    #[serde(default)]
    pub validity: Validity,
}

impl EdgeRecord {
    pub fn new(
        id: impl Into<EdgeId>,
        src: impl Into<NodeId>,
        dst: impl Into<NodeId>,
        layer: LayerKind,
        weights: WeightVector,
    ) -> Self {
        Self {
            id: id.into(),
            src: src.into(),
            dst: dst.into(),
            layer,
            weights,
            validity: Validity::ALWAYS,
        }
    }

    pub fn material(
        id: impl Into<EdgeId>,
        src: impl Into<NodeId>,
        dst: impl Into<NodeId>,
        weights: WeightVector,
    ) -> Self {
        Self::new(id, src, dst, LayerKind::Material, weights)
    }

    pub fn with_validity(mut self, validity: Validity) -> Self {
        self.validity = validity;
        self
    }

    pub fn validate(&self) -> Result<(), GraphError> {
        if self.src == self.dst {
            return Err(GraphError::InvalidWeight {
                edge: self.id.clone(),
                field: "src".to_string(),
                reason: "self-loops are not allowed".to_string(),
            });
        }
        if let Some(until) = self.validity.until {
            if until <= self.validity.from {
                return Err(GraphError::InvalidWeight {
                    edge: self.id.clone(),
                    field: "validity".to_string(),
                    reason: "empty validity interval".to_string(),
                });
            }
        }
        self.weights
            .validate(self.layer)
            .map_err(|(field, reason)| GraphError::InvalidWeight {
                edge: self.id.clone(),
                field: field.to_string(),
                reason: reason.to_string(),
            })
    }
}

/// Node-level field addressed by an attribute patch.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeField {
    Inventory,
    Backlog,
    Capacity,
    LeadTime,
    DemandRate,
    Reliability,
    CarbonIntensity,
    Custom(String),
}

impl NodeField {
    pub fn name(&self) -> &str {
        match self {
            NodeField::Inventory => "inventory",
            NodeField::Backlog => "backlog",
            NodeField::Capacity => "capacity",
            NodeField::LeadTime => "lead_time",
            NodeField::DemandRate => "demand_rate",
            NodeField::Reliability => "reliability",
            NodeField::CarbonIntensity => "carbon_intensity",
            NodeField::Custom(name) => name,
        }
    }

    pub fn get(&self, node: &EntityNode) -> Option<f64> {
        match self {
            NodeField::Inventory => Some(node.state.inventory as f64),
            NodeField::Backlog => Some(node.state.backlog as f64),
            NodeField::Capacity => node.attrs.capacity.map(|v| v as f64),
            NodeField::LeadTime => node.attrs.lead_time.map(|v| v as f64),
            NodeField::DemandRate => node.attrs.demand_rate.map(|v| v as f64),
            NodeField::Reliability => node.attrs.reliability,
            NodeField::CarbonIntensity => node.attrs.carbon_intensity,
            NodeField::Custom(name) => node.attrs.custom.get(name).copied(),
        }
    }

    /// Writes `value` into `node`; the caller re-validates the node.
    pub fn set(&self, node: &mut EntityNode, value: f64) -> Result<(), &'static str> {
        if !value.is_finite() {
            return Err("must be finite");
        }
        match self {
            NodeField::Inventory => node.state.inventory = whole_units(value)?,
            NodeField::Backlog => node.state.backlog = whole_units(value)?,
            NodeField::Capacity => node.attrs.capacity = Some(whole_units(value)?),
            NodeField::LeadTime => node.attrs.lead_time = Some(whole_units(value)?),
            NodeField::DemandRate => node.attrs.demand_rate = Some(whole_units(value)?),
            NodeField::Reliability => node.attrs.reliability = Some(value),
            NodeField::CarbonIntensity => node.attrs.carbon_intensity = Some(value),
            NodeField::Custom(name) => {
                node.attrs.custom.insert(name.clone(), value);
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeField {
    CostPerUnit,
    TransitTime,
    Capacity,
    Reliability,
    CarbonPerUnit,
}

impl EdgeField {
    pub fn name(self) -> &'static str {
        match self {
            EdgeField::CostPerUnit => "cost_per_unit",
            EdgeField::TransitTime => "transit_time",
            EdgeField::Capacity => "capacity",
            EdgeField::Reliability => "reliability",
            EdgeField::CarbonPerUnit => "carbon_per_unit",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum DeltaOp {
    AddNode { node: EntityNode },
    AddEdge { edge: EdgeRecord },
    SetNodeAttr { node: NodeId, field: NodeField, value: f64 },
    SetEdgeWeight { edge: EdgeId, field: EdgeField, value: f64 },
    RetireEdge { edge: EdgeId },
    RetireNode { node: NodeId },
}

/// One entry of the append-only graph log, ordered by `(tick, seq)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphDelta {
    pub seq: u64,
    pub tick: Tick,
    #[serde(flatten)]
    pub op: DeltaOp,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum GraphError {
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
    #[error("invalid attribute `{field}` on node `{node}`: {reason}")]
    InvalidAttribute {
        node: NodeId,
        field: String,
        reason: String,
    },
    #[error("invalid weight `{field}` on edge `{edge}`: {reason}")]
    InvalidWeight {
        edge: EdgeId,
        field: String,
        reason: String,
    },
    #[error("edge `{edge}` references unknown or retired endpoint `{node}`")]
    UnknownEndpoint { edge: EdgeId, node: NodeId },
    #[error("unknown node `{0}`")]
    UnknownNode(NodeId),
    #[error("unknown edge `{0}`")]
    UnknownEdge(EdgeId),
    #[error("tick {tick} precedes the committed horizon {horizon}")]
    StaleTick { tick: Tick, horizon: Tick },
    #[error("delta sequence {got} out of order, expected {expected}")]
    SequenceGap { expected: u64, got: u64 },
}
