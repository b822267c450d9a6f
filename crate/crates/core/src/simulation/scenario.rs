use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::SimError;
use crate::graph::{EdgeField, EdgeId, EdgeRecord, EntityKind, GraphSnapshot, NodeId, Tick, Units};
use crate::num::floor;

/// Node or edge a disturbance applies to.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Target {
    Node { node: NodeId },
    Edge { edge: EdgeId },
}

impl Target {
    pub fn node(id: impl Into<NodeId>) -> Self {
        Target::Node { node: id.into() }
    }

    pub fn edge(id: impl Into<EdgeId>) -> Self {
        Target::Edge { edge: id.into() }
    }

    pub fn id(&self) -> &str {
        match self {
            Target::Node { node } => node.as_str(),
            Target::Edge { edge } => edge.as_str(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DisturbanceKind {
    /// ξ_i(t): integer inventory noise, uniform on [−m, m].
    NodeNoise,
    /// η_ij(t): multiplicative weight drift w ← w·(1 + η), η uniform on [−m, m].
    EdgeNoise,
    /// Scales edge capacity or node supply by `magnitude` ∈ [0, 1].
    CapacityScale,
    NodeOutage,
    EdgeOutage,
}

impl DisturbanceKind {
    pub fn is_noise(self) -> bool {
        matches!(self, DisturbanceKind::NodeNoise | DisturbanceKind::EdgeNoise)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Disturbance {
    #[serde(flatten)]
    pub target: Target,
    pub kind: DisturbanceKind,
    /// Active on ticks `[from, until)`.
    pub from: Tick,
    pub until: Tick,
    #[serde(default)]
    pub magnitude: f64,
    /// Weight drifted by edge noise; cost per unit when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<EdgeField>,
}

impl Disturbance {
    pub fn new(target: Target, kind: DisturbanceKind, from: Tick, until: Tick, magnitude: f64) -> Self {
        Self {
            target,
            kind,
            from,
            until,
            magnitude,
            field: None,
        }
    }

    pub fn node_outage(node: impl Into<NodeId>, from: Tick, until: Tick) -> Self {
        Self::new(Target::node(node), DisturbanceKind::NodeOutage, from, until, 0.0)
    }

    pub fn edge_outage(edge: impl Into<EdgeId>, from: Tick, until: Tick) -> Self {
        Self::new(Target::edge(edge), DisturbanceKind::EdgeOutage, from, until, 0.0)
    }

    pub fn capacity_scale(target: Target, from: Tick, until: Tick, scale: f64) -> Self {
        Self::new(target, DisturbanceKind::CapacityScale, from, until, scale)
    }

    pub fn active_at(&self, tick: Tick) -> bool {
        self.from <= tick && tick < self.until
    }

    fn validate(&self, snapshot: &GraphSnapshot) -> Result<(), SimError> {
        let bad = |msg: String| Err(SimError::InvalidScenario(msg));
        match (&self.target, self.kind) {
            (
                Target::Node { node },
                DisturbanceKind::NodeNoise | DisturbanceKind::NodeOutage | DisturbanceKind::CapacityScale,
            ) => {
                if !snapshot.contains_node(node) {
                    return bad(format!("disturbance targets unknown node `{node}`"));
                }
            }
            (
                Target::Edge { edge },
                DisturbanceKind::EdgeNoise | DisturbanceKind::EdgeOutage | DisturbanceKind::CapacityScale,
            ) => {
                if snapshot.edge(edge).is_none() {
                    return bad(format!("disturbance targets unknown edge `{edge}`"));
                }
            }
            (target, kind) => {
                return bad(format!("{kind:?} cannot target `{}`", target.id()));
            }
        }
        if !self.magnitude.is_finite() {
            return bad(format!("non-finite magnitude on `{}`", self.target.id()));
        }
        if self.kind == DisturbanceKind::CapacityScale && !(0.0..=1.0).contains(&self.magnitude) {
            return bad(format!(
                "capacity_scale on `{}` must be within [0, 1]",
                self.target.id()
            ));
        }
        if self.kind.is_noise() && self.magnitude < 0.0 {
            return bad(format!("noise magnitude on `{}` must be >= 0", self.target.id()));
        }
        Ok(())
    }
}

/// Per-tick quantity: either constant or an explicit series.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Schedule {
    Constant(Units),
    PerTick(Vec<Units>),
}

impl Schedule {
    pub fn at(&self, tick: Tick) -> Units {
        match self {
            Schedule::Constant(v) => *v,
            Schedule::PerTick(v) => v.get(tick as usize).copied().unwrap_or(0),
        }
    }

    fn covers(&self, horizon: Tick) -> bool {
        match self {
            Schedule::Constant(_) => true,
            Schedule::PerTick(v) => v.len() as u64 >= horizon,
        }
    }
}

/// A what-if script: disturbances, supply and demand schedules and initial
/// inventory overrides.
///
/// Suppliers without a supply schedule produce their `capacity` each tick
/// (zero when unset); customers without a demand profile demand their
/// `demand_rate`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub disturbances: Vec<Disturbance>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub supply: BTreeMap<NodeId, Schedule>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub demand: BTreeMap<NodeId, Schedule>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub initial_inventory: BTreeMap<NodeId, Units>,
    /// Customers whose unmet demand is lost instead of backlogged.
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub lost_sales: BTreeSet<NodeId>,
}

/// Edits applied on top of a base scenario for a what-if comparison.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ScenarioPatch {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub disturbances: Vec<Disturbance>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub supply: BTreeMap<NodeId, Schedule>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub demand: BTreeMap<NodeId, Schedule>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub initial_inventory: BTreeMap<NodeId, Units>,
}

impl ScenarioPatch {
    pub fn is_empty(&self) -> bool {
        self.disturbances.is_empty()
            && self.supply.is_empty()
            && self.demand.is_empty()
            && self.initial_inventory.is_empty()
    }
}

impl Scenario {
    pub fn named(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            ..Self::default()
        }
    }

    pub fn with_supply(mut self, node: impl Into<NodeId>, schedule: Schedule) -> Self {
        self.supply.insert(node.into(), schedule);
        self
    }

    pub fn with_demand(mut self, node: impl Into<NodeId>, schedule: Schedule) -> Self {
        self.demand.insert(node.into(), schedule);
        self
    }

    pub fn with_disturbance(mut self, d: Disturbance) -> Self {
        self.disturbances.push(d);
        self
    }

    pub fn patched(&self, patch: &ScenarioPatch) -> Scenario {
        let mut s = self.clone();
        s.disturbances.extend(patch.disturbances.iter().cloned());
        s.supply.extend(patch.supply.clone());
        s.demand.extend(patch.demand.clone());
        s.initial_inventory.extend(patch.initial_inventory.clone());
        s
    }

    /// The deterministic part of the scenario: noise disturbances removed.
    pub fn without_noise(&self) -> Scenario {
        let mut s = self.clone();
        s.disturbances.retain(|d| !d.kind.is_noise());
        s
    }

    pub fn has_noise(&self) -> bool {
        self.disturbances
            .iter()
            .any(|d| d.kind.is_noise() && d.magnitude != 0.0)
    }

    pub fn validate(&self, snapshot: &GraphSnapshot, horizon: Tick) -> Result<(), SimError> {
        for d in &self.disturbances {
            d.validate(snapshot)?;
        }
        for (node, schedule) in &self.supply {
            if !snapshot.contains_node(node) {
                return Err(SimError::InvalidScenario(format!("supply for unknown node `{node}`")));
            }
            if !schedule.covers(horizon) {
                return Err(SimError::InvalidScenario(format!(
                    "supply schedule of `{node}` is shorter than the horizon {horizon}"
                )));
            }
        }
        for (node, schedule) in &self.demand {
            match snapshot.node(node) {
                Some(n) if n.kind == EntityKind::Customer => {}
                Some(_) => {
                    return Err(SimError::InvalidScenario(format!(
                        "demand profile on non-customer `{node}`"
                    )))
                }
                None => return Err(SimError::InvalidScenario(format!("demand for unknown node `{node}`"))),
            }
            if !schedule.covers(horizon) {
                return Err(SimError::InvalidScenario(format!(
                    "demand profile of `{node}` is shorter than the horizon {horizon}"
                )));
            }
        }
        for node in self.initial_inventory.keys().chain(self.lost_sales.iter()) {
            if !snapshot.contains_node(node) {
                return Err(SimError::InvalidScenario(format!("override for unknown node `{node}`")));
            }
        }
        Ok(())
    }

    fn active(&self, tick: Tick) -> impl Iterator<Item = &Disturbance> {
        self.disturbances.iter().filter(move |d| d.active_at(tick))
    }

    pub fn node_outage(&self, node: &NodeId, tick: Tick) -> bool {
        self.active(tick).any(|d| {
            d.kind == DisturbanceKind::NodeOutage && matches!(&d.target, Target::Node { node: n } if n == node)
        })
    }

    pub fn edge_outage(&self, edge: &EdgeId, tick: Tick) -> bool {
        self.active(tick).any(|d| {
            d.kind == DisturbanceKind::EdgeOutage && matches!(&d.target, Target::Edge { edge: e } if e == edge)
        })
    }

    fn scale(&self, target: &Target, tick: Tick) -> f64 {
        self.active(tick)
            .filter(|d| d.kind == DisturbanceKind::CapacityScale && &d.target == target)
            .map(|d| d.magnitude)
            .product()
    }

    /// Capacity of an edge at a tick after scaling and outages (of the edge
    /// or either endpoint).
    pub fn effective_capacity(&self, edge: &EdgeRecord, base: Units, tick: Tick) -> Units {
        if self.edge_outage(&edge.id, tick) || self.node_outage(&edge.src, tick) || self.node_outage(&edge.dst, tick) {
            return 0;
        }
        let scale = self.scale(&Target::Edge { edge: edge.id.clone() }, tick);
        scaled(base, scale)
    }

    pub fn scheduled_supply(&self, snapshot: &GraphSnapshot, node: &NodeId, tick: Tick) -> Units {
        match self.supply.get(node) {
            Some(s) => s.at(tick),
            None => snapshot
                .node(node)
                .filter(|n| n.kind == EntityKind::Supplier)
                .and_then(|n| n.attrs.capacity)
                .unwrap_or(0),
        }
    }

    /// Supply actually produced at `node`: zero during an outage, otherwise
    /// the schedule capped by the (scaled) node capacity.
    pub fn realized_supply(&self, snapshot: &GraphSnapshot, node: &NodeId, tick: Tick) -> Units {
        if self.node_outage(node, tick) {
            return 0;
        }
        let scheduled = self.scheduled_supply(snapshot, node, tick);
        if scheduled == 0 {
            return 0;
        }
        let scale = self.scale(&Target::Node { node: node.clone() }, tick);
        match snapshot.node(node).and_then(|n| n.attrs.capacity) {
            Some(cap) => scheduled.min(scaled(cap, scale)),
            None => scaled(scheduled, scale),
        }
    }

    /// Node capacity after scaling; `None` when the node declares none.
    pub fn effective_node_capacity(&self, snapshot: &GraphSnapshot, node: &NodeId, tick: Tick) -> Option<Units> {
        let cap = snapshot.node(node)?.attrs.capacity?;
        if self.node_outage(node, tick) {
            return Some(0);
        }
        Some(scaled(cap, self.scale(&Target::Node { node: node.clone() }, tick)))
    }

    pub fn demand_at(&self, snapshot: &GraphSnapshot, node: &NodeId, tick: Tick) -> Units {
        match self.demand.get(node) {
            Some(s) => s.at(tick),
            None => snapshot
                .node(node)
                .filter(|n| n.kind == EntityKind::Customer)
                .and_then(|n| n.attrs.demand_rate)
                .unwrap_or(0),
        }
    }

    pub fn initial_inventory_of(&self, snapshot: &GraphSnapshot, node: &NodeId) -> Units {
        self.initial_inventory
            .get(node)
            .copied()
            .or_else(|| snapshot.node(node).map(|n| n.state.inventory))
            .unwrap_or(0)
    }

    pub fn is_lost_sales(&self, node: &NodeId) -> bool {
        self.lost_sales.contains(node)
    }

    pub(crate) fn active_with_index(&self, tick: Tick) -> impl Iterator<Item = (usize, &Disturbance)> {
        self.disturbances
            .iter()
            .enumerate()
            .filter(move |(_, d)| d.active_at(tick))
    }
}

fn scaled(base: Units, scale: f64) -> Units {
    if scale >= 1.0 {
        base
    } else {
        floor(base as f64 * scale) as Units
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{EntityNode, WeightVector};

    fn snap() -> GraphSnapshot {
        GraphSnapshot::new(
            0,
            [
                EntityNode::new("S", EntityKind::Supplier).with_capacity(8),
                EntityNode::new("C", EntityKind::Customer).with_demand_rate(3),
            ],
            [EdgeRecord::material(
                "E",
                "S",
                "C",
                WeightVector {
                    capacity: 10,
                    ..WeightVector::default()
                },
            )],
        )
    }

    #[test]
    fn capacity_scale_halves_edge_capacity() {
        let s = snap();
        let sc = Scenario::named("x").with_disturbance(Disturbance::capacity_scale(Target::edge("E"), 0, 3, 0.5));
        let e = s.edge(&"E".into()).unwrap();
        assert_eq!(sc.effective_capacity(e, 10, 1), 5);
        assert_eq!(sc.effective_capacity(e, 10, 3), 10);
    }

    #[test]
    fn node_outage_closes_incident_edges_and_supply() {
        let s = snap();
        let sc = Scenario::named("x").with_disturbance(Disturbance::node_outage("S", 2, 4));
        let e = s.edge(&"E".into()).unwrap();
        assert_eq!(sc.effective_capacity(e, 10, 2), 0);
        assert_eq!(sc.realized_supply(&s, &"S".into(), 2), 0);
        assert_eq!(sc.realized_supply(&s, &"S".into(), 4), 8);
    }

    #[test]
    fn defaults_come_from_node_attributes() {
        let s = snap();
        let sc = Scenario::named("x");
        assert_eq!(sc.scheduled_supply(&s, &"S".into(), 7), 8);
        assert_eq!(sc.demand_at(&s, &"C".into(), 7), 3);
        assert_eq!(sc.demand_at(&s, &"S".into(), 7), 0);
    }

    #[test]
    fn supply_is_capped_by_scaled_node_capacity() {
        let s = snap();
        let sc = Scenario::named("x")
            .with_supply("S", Schedule::Constant(20))
            .with_disturbance(Disturbance::capacity_scale(Target::node("S"), 0, 1, 0.25));
        assert_eq!(sc.realized_supply(&s, &"S".into(), 0), 2);
        assert_eq!(sc.realized_supply(&s, &"S".into(), 1), 8);
    }

    #[test]
    fn validation_rejects_bad_disturbances() {
        let s = snap();
        let bad_scale =
            Scenario::named("x").with_disturbance(Disturbance::capacity_scale(Target::edge("E"), 0, 1, 1.5));
        assert!(bad_scale.validate(&s, 1).is_err());
        let wrong_target = Scenario::named("x").with_disturbance(Disturbance::edge_outage("S", 0, 1));
        assert!(wrong_target.validate(&s, 1).is_err());
        let short = Scenario::named("x").with_demand("C", Schedule::PerTick(alloc::vec![1, 2]));
        assert!(short.validate(&s, 3).is_err());
        assert!(short.validate(&s, 2).is_ok());
    }
}
