use alloc::collections::BTreeMap;
use alloc::string::ToString;
use alloc::vec::Vec;

use super::{DeltaOp, EdgeId, EdgeRecord, EntityNode, GraphDelta, GraphError, GraphSnapshot, NodeId, Tick};
use crate::provenance::Provenance;

#[derive(Clone, Debug, PartialEq)]
struct Lived<T> {
    record: T,
    created: Tick,
    retired: Option<Tick>,
}

impl<T> Lived<T> {
    fn live_at(&self, tick: Tick) -> bool {
        self.created <= tick && self.retired.is_none_or(|r| tick < r)
    }
}

/// Every record ever created, with its lifetime. Deltas are applied in
/// `(tick, seq)` order.
#[derive(Clone, Debug, Default, PartialEq)]
struct GraphState {
    nodes: BTreeMap<NodeId, Lived<EntityNode>>,
    edges: BTreeMap<EdgeId, Lived<EdgeRecord>>,
}

impl GraphState {
    /// Validates then applies; on error the state is untouched.
    fn apply(&mut self, delta: &GraphDelta) -> Result<(), GraphError> {
        let tick = delta.tick;
        match &delta.op {
            DeltaOp::AddNode { node } => {
                if self.nodes.contains_key(&node.id) {
                    return Err(GraphError::DuplicateId(node.id.0.clone()));
                }
                node.validate()?;
                self.nodes.insert(
                    node.id.clone(),
                    Lived {
                        record: node.clone(),
                        created: tick,
                        retired: None,
                    },
                );
            }
            DeltaOp::AddEdge { edge } => {
                if self.edges.contains_key(&edge.id) {
                    return Err(GraphError::DuplicateId(edge.id.0.clone()));
                }
                edge.validate()?;
                for end in [&edge.src, &edge.dst] {
                    if !self.nodes.get(end).is_some_and(|n| n.live_at(tick)) {
                        return Err(GraphError::UnknownEndpoint {
                            edge: edge.id.clone(),
                            node: end.clone(),
                        });
                    }
                }
                self.edges.insert(
                    edge.id.clone(),
                    Lived {
                        record: edge.clone(),
                        created: tick,
                        retired: None,
                    },
                );
            }
            DeltaOp::SetNodeAttr { node, field, value } => {
                let entry = self
                    .nodes
                    .get_mut(node)
                    .filter(|n| n.live_at(tick))
                    .ok_or_else(|| GraphError::UnknownNode(node.clone()))?;
                let mut updated = entry.record.clone();
                field
                    .set(&mut updated, *value)
                    .map_err(|reason| GraphError::InvalidAttribute {
                        node: node.clone(),
                        field: field.name().to_string(),
                        reason: reason.to_string(),
                    })?;
                updated.validate()?;
                entry.record = updated;
            }
            DeltaOp::SetEdgeWeight { edge, field, value } => {
                let entry = self
                    .edges
                    .get_mut(edge)
                    .filter(|e| e.live_at(tick))
                    .ok_or_else(|| GraphError::UnknownEdge(edge.clone()))?;
                let mut updated = entry.record.clone();
                updated
                    .weights
                    .set(*field, *value)
                    .map_err(|reason| GraphError::InvalidWeight {
                        edge: edge.clone(),
                        field: field.name().to_string(),
                        reason: reason.to_string(),
                    })?;
                updated.validate()?;
                entry.record = updated;
            }
            DeltaOp::RetireEdge { edge } => {
                let entry = self
                    .edges
                    .get_mut(edge)
                    .filter(|e| e.live_at(tick))
                    .ok_or_else(|| GraphError::UnknownEdge(edge.clone()))?;
                entry.retired = Some(tick);
            }
            DeltaOp::RetireNode { node } => {
                let entry = self
                    .nodes
                    .get_mut(node)
                    .filter(|n| n.live_at(tick))
                    .ok_or_else(|| GraphError::UnknownNode(node.clone()))?;
                entry.retired = Some(tick);
                for e in self.edges.values_mut() {
                    if e.live_at(tick) && (&e.record.src == node || &e.record.dst == node) {
                        e.retired = Some(tick);
                    }
                }
            }
        }
        Ok(())
    }

    fn view(&self, tick: Tick) -> GraphSnapshot {
        GraphSnapshot::new(
            tick,
            self.nodes
                .values()
                .filter(|n| n.live_at(tick))
                .map(|n| n.record.clone()),
            self.edges
                .values()
                .filter(|e| e.live_at(tick) && e.record.validity.covers(tick))
                .map(|e| e.record.clone()),
        )
    }
}

/// Append-only log of graph deltas with point-in-time materialization.
///
/// Appends are accepted at any tick at or after the committed horizon. A
/// delta older than the newest one is spliced into `(tick, seq)` order and
/// rejected if it would invalidate a later delta.
#[derive(Clone, Debug, Default)]
pub struct Timeline {
    log: Vec<GraphDelta>,
    /// Indices into `log` sorted by `(tick, seq)`.
    order: Vec<usize>,
    horizon: Tick,
    head: GraphState,
}

impl Timeline {
    pub fn new() -> Self {
        Self::default()
    }

    /// Rebuilds a timeline from a persisted log in sequence order.
    pub fn from_log(deltas: impl IntoIterator<Item = GraphDelta>) -> Result<Self, GraphError> {
        let mut tl = Timeline::new();
        for delta in deltas {
            tl.apply_prepared(delta)?;
        }
        Ok(tl)
    }

    /// Deltas in sequence (append) order.
    pub fn deltas(&self) -> &[GraphDelta] {
        &self.log
    }

    pub fn len(&self) -> usize {
        self.log.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log.is_empty()
    }

    pub fn next_seq(&self) -> u64 {
        self.log.len() as u64
    }

    /// Newest tick present in the log.
    pub fn max_tick(&self) -> Tick {
        self.order.last().map_or(0, |&i| self.log[i].tick)
    }

    /// Appends at ticks before this are rejected with `StaleTick`.
    pub fn horizon(&self) -> Tick {
        self.horizon
    }

    /// Moves the committed horizon forward; it never moves back.
    pub fn advance_horizon(&mut self, tick: Tick) {
        self.horizon = self.horizon.max(tick);
    }

    /// Builds the next delta without applying it, so a writer can persist
    /// it first. Validation is repeated by [`Timeline::apply_prepared`].
    pub fn prepare(&self, tick: Tick, op: DeltaOp, provenance: Option<Provenance>) -> Result<GraphDelta, GraphError> {
        let delta = GraphDelta {
            seq: self.next_seq(),
            tick,
            op,
            provenance,
        };
        self.check(&delta)?;
        Ok(delta)
    }

    fn check(&self, delta: &GraphDelta) -> Result<(), GraphError> {
        if delta.seq != self.next_seq() {
            return Err(GraphError::SequenceGap {
                expected: self.next_seq(),
                got: delta.seq,
            });
        }
        if delta.tick < self.horizon {
            return Err(GraphError::StaleTick {
                tick: delta.tick,
                horizon: self.horizon,
            });
        }
        if delta.tick >= self.max_tick() {
            self.head.clone().apply(delta)
        } else {
            self.spliced(delta).map(|_| ())
        }
    }

    fn spliced(&self, delta: &GraphDelta) -> Result<(Vec<usize>, GraphState), GraphError> {
        let pos = self.order.partition_point(|&i| self.log[i].tick <= delta.tick);
        let mut state = GraphState::default();
        for &i in &self.order[..pos] {
            state.apply(&self.log[i])?;
        }
        state.apply(delta)?;
        for &i in &self.order[pos..] {
            state.apply(&self.log[i])?;
        }
        let mut order = self.order.clone();
        order.insert(pos, self.log.len());
        Ok((order, state))
    }

    /// Applies a delta produced by [`Timeline::prepare`] (or read back from
    /// a persisted log).
    pub fn apply_prepared(&mut self, delta: GraphDelta) -> Result<(), GraphError> {
        if delta.seq != self.next_seq() {
            return Err(GraphError::SequenceGap {
                expected: self.next_seq(),
                got: delta.seq,
            });
        }
        if delta.tick < self.horizon {
            return Err(GraphError::StaleTick {
                tick: delta.tick,
                horizon: self.horizon,
            });
        }
        if delta.tick >= self.max_tick() {
            self.head.apply(&delta)?;
            self.order.push(self.log.len());
        } else {
            let (order, state) = self.spliced(&delta)?;
            self.order = order;
            self.head = state;
        }
        self.log.push(delta);
        Ok(())
    }

    pub fn append(
        &mut self,
        tick: Tick,
        op: DeltaOp,
        provenance: Option<Provenance>,
    ) -> Result<&GraphDelta, GraphError> {
        let delta = self.prepare(tick, op, provenance)?;
        self.apply_prepared(delta)?;
        Ok(self.log.last().expect("just pushed"))
    }

    pub fn add_node(&mut self, tick: Tick, node: EntityNode) -> Result<NodeId, GraphError> {
        let id = node.id.clone();
        self.append(tick, DeltaOp::AddNode { node }, None)?;
        Ok(id)
    }

    pub fn add_edge(&mut self, tick: Tick, edge: EdgeRecord) -> Result<EdgeId, GraphError> {
        let id = edge.id.clone();
        self.append(tick, DeltaOp::AddEdge { edge }, None)?;
        Ok(id)
    }

    /// Replays every delta with tick ≤ `tick` from an empty graph.
    pub fn snapshot_at(&self, tick: Tick) -> GraphSnapshot {
        let mut state = GraphState::default();
        for &i in &self.order {
            let delta = &self.log[i];
            if delta.tick > tick {
                break;
            }
            state.apply(delta).expect("logged deltas were validated on append");
        }
        state.view(tick)
    }

    /// Snapshot at the newest tick in the log.
    pub fn latest(&self) -> GraphSnapshot {
        self.head.view(self.max_tick())
    }

    /// Latest version of a node regardless of liveness.
    pub fn head_node(&self, id: &NodeId) -> Option<&EntityNode> {
        self.head.nodes.get(id).map(|n| &n.record)
    }

    pub fn head_edge(&self, id: &EdgeId) -> Option<&EdgeRecord> {
        self.head.edges.get(id).map(|e| &e.record)
    }

    pub fn node_live_at(&self, id: &NodeId, tick: Tick) -> bool {
        self.head.nodes.get(id).is_some_and(|n| n.live_at(tick))
    }

    pub fn edge_live_at(&self, id: &EdgeId, tick: Tick) -> bool {
        self.head.edges.get(id).is_some_and(|e| e.live_at(tick))
    }

    /// Incremental materializer; see [`SnapshotCursor`].
    pub fn cursor(&self) -> SnapshotCursor {
        SnapshotCursor::default()
    }
}

/// Applies deltas incrementally as the requested tick moves forward.
#[derive(Clone, Debug, Default)]
pub struct SnapshotCursor {
    state: GraphState,
    pos: usize,
    tick: Option<Tick>,
}

impl SnapshotCursor {
    pub fn advance_to(&mut self, timeline: &Timeline, tick: Tick) -> GraphSnapshot {
        if self.tick.is_some_and(|t| tick < t) {
            *self = SnapshotCursor::default();
        }
        while let Some(&i) = timeline.order.get(self.pos) {
            let delta = &timeline.log[i];
            if delta.tick > tick {
                break;
            }
            self.state.apply(delta).expect("logged deltas were validated on append");
            self.pos += 1;
        }
        self.tick = Some(tick);
        self.state.view(tick)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{EntityKind, LayerKind, Validity, WeightVector};

    fn supplier(id: &str) -> EntityNode {
        EntityNode::new(id, EntityKind::Supplier)
    }

    #[test]
    fn added_node_is_visible_from_its_tick() {
        let mut tl = Timeline::new();
        tl.add_node(1, supplier("S1")).unwrap();
        assert!(tl.snapshot_at(0).node(&"S1".into()).is_none());
        assert!(tl.snapshot_at(1).node(&"S1".into()).is_some());
        assert!(tl.snapshot_at(100).node(&"S1".into()).is_some());
    }

    #[test]
    fn empty_timeline_gives_empty_snapshot() {
        let tl = Timeline::new();
        assert!(tl.snapshot_at(0).is_empty());
    }

    #[test]
    fn reliability_out_of_bounds_is_rejected() {
        let mut tl = Timeline::new();
        let mut n = supplier("S1");
        n.attrs.reliability = Some(1.3);
        match tl.add_node(0, n) {
            Err(GraphError::InvalidAttribute { field, .. }) => assert_eq!(field, "reliability"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(tl.is_empty());
    }

    #[test]
    fn duplicate_ids_are_rejected_even_after_retirement() {
        let mut tl = Timeline::new();
        tl.add_node(0, supplier("S1")).unwrap();
        assert_eq!(
            tl.add_node(0, supplier("S1")),
            Err(GraphError::DuplicateId("S1".into()))
        );
        tl.append(2, DeltaOp::RetireNode { node: "S1".into() }, None).unwrap();
        assert_eq!(
            tl.add_node(3, supplier("S1")),
            Err(GraphError::DuplicateId("S1".into()))
        );
    }

    #[test]
    fn edge_respects_validity_interval() {
        let mut tl = Timeline::new();
        tl.add_node(0, supplier("S1")).unwrap();
        tl.add_node(0, EntityNode::new("M1", EntityKind::Manufacturer).with_capacity(5))
            .unwrap();
        let e = EdgeRecord::material("E1", "S1", "M1", WeightVector::default()).with_validity(Validity::between(2, 5));
        tl.add_edge(0, e).unwrap();
        assert!(tl.snapshot_at(1).edge(&"E1".into()).is_none());
        assert!(tl.snapshot_at(2).edge(&"E1".into()).is_some());
        assert!(tl.snapshot_at(4).edge(&"E1".into()).is_some());
        assert!(tl.snapshot_at(6).edge(&"E1".into()).is_none());
    }

    #[test]
    fn edge_to_unknown_node_is_rejected() {
        let mut tl = Timeline::new();
        tl.add_node(0, supplier("S1")).unwrap();
        let err = tl
            .add_edge(0, EdgeRecord::material("E1", "S1", "X", WeightVector::default()))
            .unwrap_err();
        assert!(matches!(err, GraphError::UnknownEndpoint { .. }));
    }

    #[test]
    fn zero_transit_material_edge_is_rejected() {
        let mut tl = Timeline::new();
        tl.add_node(0, supplier("A")).unwrap();
        tl.add_node(0, supplier("B")).unwrap();
        let w = WeightVector {
            transit_time: 0,
            ..WeightVector::default()
        };
        let err = tl.add_edge(0, EdgeRecord::material("E1", "A", "B", w)).unwrap_err();
        assert!(matches!(err, GraphError::InvalidWeight { ref field, .. } if field == "transit_time"));
        // information edges may be instantaneous
        tl.add_edge(0, EdgeRecord::new("I1", "A", "B", LayerKind::Information, w))
            .unwrap();
    }

    #[test]
    fn negative_cost_only_on_financial_edges() {
        let mut tl = Timeline::new();
        tl.add_node(0, supplier("A")).unwrap();
        tl.add_node(0, supplier("B")).unwrap();
        let w = WeightVector {
            cost_per_unit: -2.0,
            ..WeightVector::default()
        };
        assert!(tl.add_edge(0, EdgeRecord::material("E1", "A", "B", w)).is_err());
        tl.add_edge(0, EdgeRecord::new("F1", "A", "B", LayerKind::Financial, w))
            .unwrap();
    }

    #[test]
    fn retiring_a_node_retires_its_edges() {
        let mut tl = Timeline::new();
        tl.add_node(0, supplier("A")).unwrap();
        tl.add_node(0, supplier("B")).unwrap();
        tl.add_edge(0, EdgeRecord::material("E1", "A", "B", WeightVector::default()))
            .unwrap();
        tl.append(3, DeltaOp::RetireNode { node: "B".into() }, None).unwrap();
        assert_eq!(tl.snapshot_at(2).edge_count(), 1);
        let s = tl.snapshot_at(3);
        assert_eq!(s.edge_count(), 0);
        assert_eq!(s.node_count(), 1);
    }

    #[test]
    fn stale_ticks_are_rejected() {
        let mut tl = Timeline::new();
        tl.advance_horizon(5);
        assert_eq!(
            tl.add_node(4, supplier("A")),
            Err(GraphError::StaleTick { tick: 4, horizon: 5 })
        );
    }

    #[test]
    fn late_delta_is_spliced_into_tick_order() {
        let mut tl = Timeline::new();
        tl.add_node(0, supplier("A")).unwrap();
        let inv = |v: f64| DeltaOp::SetNodeAttr {
            node: "A".into(),
            field: crate::graph::NodeField::Inventory,
            value: v,
        };
        tl.append(5, inv(50.0), None).unwrap();
        tl.append(3, inv(30.0), None).unwrap();
        assert_eq!(tl.snapshot_at(4).node(&"A".into()).unwrap().state.inventory, 30);
        assert_eq!(tl.snapshot_at(5).node(&"A".into()).unwrap().state.inventory, 50);
        assert_eq!(tl.latest().node(&"A".into()).unwrap().state.inventory, 50);
    }

    #[test]
    fn late_delta_that_breaks_history_is_rejected() {
        let mut tl = Timeline::new();
        tl.add_node(0, supplier("A")).unwrap();
        tl.append(
            5,
            DeltaOp::SetNodeAttr {
                node: "A".into(),
                field: crate::graph::NodeField::Inventory,
                value: 1.0,
            },
            None,
        )
        .unwrap();
        let before = tl.len();
        assert!(tl.append(3, DeltaOp::RetireNode { node: "A".into() }, None).is_err());
        assert_eq!(tl.len(), before);
    }
}
