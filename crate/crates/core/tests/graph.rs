use std::collections::BTreeMap;

use chaintwin_core::graph::{DeltaOp, EdgeField, NodeField, Validity};
use chaintwin_core::{
    EdgeId, EdgeRecord, EntityKind, EntityNode, GraphDelta, GraphSnapshot, LayerFilter, LayerKind, NodeId, Timeline,
    WeightVector,
};
use proptest::prelude::*;

/// One generated step: `(tick increment or back-step, op code, a, b, value)`.
type Step = (i8, u8, u8, u8, u8);

fn build(steps: &[Step]) -> Timeline {
    let mut tl = Timeline::new();
    let mut tick: u64 = 0;
    let mut nodes = 0usize;
    let mut edges = 0usize;
    for &(dt, code, a, b, v) in steps {
        tick = if dt < 0 {
            tick.saturating_sub((-dt) as u64)
        } else {
            tick + dt as u64
        };
        let node = |i: u8| NodeId::from(format!("n{}", i as usize % nodes.max(1)).as_str());
        let edge = |i: u8| EdgeId::from(format!("e{}", i as usize % edges.max(1)).as_str());
        let op = match code % 6 {
            0 => {
                let kind = [EntityKind::Supplier, EntityKind::Warehouse, EntityKind::Distributor][a as usize % 3];
                DeltaOp::AddNode {
                    node: EntityNode::new(format!("n{nodes}").as_str(), kind).with_inventory(v as u64),
                }
            }
            1 => {
                let layer = [LayerKind::Material, LayerKind::Information, LayerKind::Financial][v as usize % 3];
                let mut e = EdgeRecord::new(
                    format!("e{edges}").as_str(),
                    node(a),
                    node(b),
                    layer,
                    WeightVector {
                        cost_per_unit: v as f64,
                        capacity: v as u64,
                        ..WeightVector::default()
                    },
                );
                if v % 4 == 0 {
                    e = e.with_validity(Validity::between(tick, tick + 1 + v as u64 % 7));
                }
                DeltaOp::AddEdge { edge: e }
            }
            2 => DeltaOp::SetNodeAttr {
                node: node(a),
                field: NodeField::Inventory,
                value: v as f64,
            },
            3 => DeltaOp::SetEdgeWeight {
                edge: edge(a),
                field: EdgeField::Capacity,
                value: v as f64,
            },
            4 => DeltaOp::RetireEdge { edge: edge(a) },
            _ => DeltaOp::RetireNode { node: node(a) },
        };
        let adds_node = matches!(op, DeltaOp::AddNode { .. });
        let adds_edge = matches!(op, DeltaOp::AddEdge { .. });
        if tl.append(tick, op, None).is_ok() {
            nodes += adds_node as usize;
            edges += adds_edge as usize;
        }
    }
    tl
}

/// Direct materialization: deltas with tick ≤ t in `(tick, seq)` order,
/// retirements remove the record (and a node's incident edges), then the
/// validity interval filters edges.
fn reference_snapshot(log: &[GraphDelta], t: u64) -> GraphSnapshot {
    let mut ordered: Vec<&GraphDelta> = log.iter().filter(|d| d.tick <= t).collect();
    ordered.sort_by_key(|d| (d.tick, d.seq));
    let mut nodes: BTreeMap<NodeId, EntityNode> = BTreeMap::new();
    let mut edges: BTreeMap<EdgeId, EdgeRecord> = BTreeMap::new();
    for d in ordered {
        match &d.op {
            DeltaOp::AddNode { node } => {
                nodes.insert(node.id.clone(), node.clone());
            }
            DeltaOp::AddEdge { edge } => {
                edges.insert(edge.id.clone(), edge.clone());
            }
            DeltaOp::SetNodeAttr { node, field, value } => {
                field.set(nodes.get_mut(node).unwrap(), *value).unwrap();
            }
            DeltaOp::SetEdgeWeight { edge, field, value } => {
                edges.get_mut(edge).unwrap().weights.set(*field, *value).unwrap();
            }
            DeltaOp::RetireEdge { edge } => {
                edges.remove(edge);
            }
            DeltaOp::RetireNode { node } => {
                nodes.remove(node);
                edges.retain(|_, e| &e.src != node && &e.dst != node);
            }
        }
    }
    GraphSnapshot::new(
        t,
        nodes.into_values(),
        edges.into_values().filter(|e| e.validity.covers(t)),
    )
}

fn steps() -> impl Strategy<Value = Vec<Step>> {
    prop::collection::vec((-2i8..4, any::<u8>(), any::<u8>(), any::<u8>(), 0u8..12), 0..40)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn replay_is_deterministic(steps in steps()) {
        let tl = build(&steps);
        let replayed = Timeline::from_log(tl.deltas().to_vec()).unwrap();
        let mut cursor = tl.cursor();
        for t in 0..=tl.max_tick() + 2 {
            let a = tl.snapshot_at(t);
            prop_assert_eq!(&a, &tl.snapshot_at(t));
            prop_assert_eq!(&a, &replayed.snapshot_at(t));
            prop_assert_eq!(&a, &cursor.advance_to(&tl, t));
            prop_assert_eq!(&a, &reference_snapshot(tl.deltas(), t));
        }
        prop_assert_eq!(tl.latest(), tl.snapshot_at(tl.max_tick()));
    }

    #[test]
    fn layers_partition_the_edge_set(steps in steps()) {
        let tl = build(&steps);
        for t in 0..=tl.max_tick() {
            let s = tl.snapshot_at(t);
            let mut seen: BTreeMap<EdgeId, usize> = BTreeMap::new();
            for layer in LayerKind::ALL {
                let view = s.layer_view(layer);
                prop_assert_eq!(view.node_count(), s.node_count());
                for e in view.edges() {
                    prop_assert_eq!(e.layer, layer);
                    *seen.entry(e.id.clone()).or_default() += 1;
                }
            }
            prop_assert!(seen.values().all(|&c| c == 1));
            let all: Vec<&EdgeId> = s.edges_in(LayerFilter::All).map(|e| &e.id).collect();
            prop_assert_eq!(all, seen.keys().collect::<Vec<_>>());
        }
    }

    #[test]
    fn unbounded_records_stay_visible(steps in steps()) {
        let tl = build(&steps);
        let horizon = tl.max_tick() + 3;
        let snaps: Vec<GraphSnapshot> = (0..horizon).map(|t| tl.snapshot_at(t)).collect();
        for t in 0..horizon {
            let s = &snaps[t as usize];
            for e in s.edges().filter(|e| e.validity.until.is_none()) {
                let retired = tl.deltas().iter().any(|d| {
                    d.tick > t && match &d.op {
                        DeltaOp::RetireEdge { edge } => edge == &e.id,
                        DeltaOp::RetireNode { node } => node == &e.src || node == &e.dst,
                        _ => false,
                    }
                });
                if !retired {
                    for later in t..horizon {
                        prop_assert!(snaps[later as usize].edge(&e.id).is_some());
                    }
                }
            }
        }
    }
}

#[test]
fn retired_edge_disappears_at_its_tick() {
    let mut tl = Timeline::new();
    tl.add_node(0, EntityNode::new("a", EntityKind::Supplier)).unwrap();
    tl.add_node(0, EntityNode::new("b", EntityKind::Warehouse)).unwrap();
    tl.add_edge(0, EdgeRecord::material("ab", "a", "b", WeightVector::default()))
        .unwrap();
    tl.append(3, DeltaOp::RetireEdge { edge: "ab".into() }, None).unwrap();
    assert!(tl.snapshot_at(2).edge(&"ab".into()).is_some());
    assert!(tl.snapshot_at(3).edge(&"ab".into()).is_none());
}
