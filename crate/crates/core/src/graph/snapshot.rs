use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{EdgeId, EdgeRecord, EntityKind, EntityNode, GraphError, LayerKind, NodeId, Tick};

/// Which edge layers a query considers.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerFilter {
    #[default]
    All,
    Only(LayerKind),
}

impl LayerFilter {
    pub fn admits(self, layer: LayerKind) -> bool {
        match self {
            LayerFilter::All => true,
            LayerFilter::Only(l) => l == layer,
        }
    }
}

impl From<LayerKind> for LayerFilter {
    fn from(layer: LayerKind) -> Self {
        LayerFilter::Only(layer)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Out,
    In,
    Both,
}

#[derive(Clone, Debug, Default, PartialEq)]
struct LayerAdjacency {
    out: BTreeMap<NodeId, Vec<EdgeId>>,
    inc: BTreeMap<NodeId, Vec<EdgeId>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct SnapshotParts {
    tick: Tick,
    nodes: Vec<EntityNode>,
    edges: Vec<EdgeRecord>,
}

/// Materialized view of the graph at one tick. Immutable once built.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "SnapshotParts", from = "SnapshotParts")]
pub struct GraphSnapshot {
    tick: Tick,
    nodes: BTreeMap<NodeId, EntityNode>,
    edges: BTreeMap<EdgeId, EdgeRecord>,
    layers: [LayerAdjacency; 3],
}

impl From<GraphSnapshot> for SnapshotParts {
    fn from(s: GraphSnapshot) -> Self {
        SnapshotParts {
            tick: s.tick,
            nodes: s.nodes.into_values().collect(),
            edges: s.edges.into_values().collect(),
        }
    }
}

impl From<SnapshotParts> for GraphSnapshot {
    fn from(p: SnapshotParts) -> Self {
        GraphSnapshot::new(p.tick, p.nodes, p.edges)
    }
}

/// One neighbor of a node as seen through a specific edge.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Neighbor<'a> {
    pub edge: &'a EdgeRecord,
    pub node: &'a NodeId,
}

impl GraphSnapshot {
    /// Builds a snapshot from records. Edges whose endpoints are missing are
    /// dropped.
    pub fn new(
        tick: Tick,
        nodes: impl IntoIterator<Item = EntityNode>,
        edges: impl IntoIterator<Item = EdgeRecord>,
    ) -> Self {
        let nodes: BTreeMap<NodeId, EntityNode> = nodes.into_iter().map(|n| (n.id.clone(), n)).collect();
        let edges: BTreeMap<EdgeId, EdgeRecord> = edges
            .into_iter()
            .filter(|e| nodes.contains_key(&e.src) && nodes.contains_key(&e.dst))
            .map(|e| (e.id.clone(), e))
            .collect();
        let mut layers: [LayerAdjacency; 3] = Default::default();
        // BTreeMap iteration keeps each adjacency list sorted by edge id.
        for edge in edges.values() {
            let adj = &mut layers[edge.layer.index()];
            adj.out.entry(edge.src.clone()).or_default().push(edge.id.clone());
            adj.inc.entry(edge.dst.clone()).or_default().push(edge.id.clone());
        }
        Self {
            tick,
            nodes,
            edges,
            layers,
        }
    }

    pub fn empty(tick: Tick) -> Self {
        Self::new(tick, [], [])
    }

    pub fn tick(&self) -> Tick {
        self.tick
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn node(&self, id: &NodeId) -> Option<&EntityNode> {
        self.nodes.get(id)
    }

    pub fn edge(&self, id: &EdgeId) -> Option<&EdgeRecord> {
        self.edges.get(id)
    }

    pub fn contains_node(&self, id: &NodeId) -> bool {
        self.nodes.contains_key(id)
    }

    /// Nodes in id order.
    pub fn nodes(&self) -> impl Iterator<Item = &EntityNode> {
        self.nodes.values()
    }

    /// Edges in id order.
    pub fn edges(&self) -> impl Iterator<Item = &EdgeRecord> {
        self.edges.values()
    }

    pub fn node_ids(&self) -> impl Iterator<Item = &NodeId> {
        self.nodes.keys()
    }

    pub fn nodes_of_kind(&self, kind: EntityKind) -> impl Iterator<Item = &EntityNode> {
        self.nodes.values().filter(move |n| n.kind == kind)
    }

    pub fn edges_in(&self, filter: LayerFilter) -> impl Iterator<Item = &EdgeRecord> {
        self.edges.values().filter(move |e| filter.admits(e.layer))
    }

    /// Sub-view restricted to one layer; all nodes are kept.
    pub fn layer_view(&self, layer: LayerKind) -> GraphSnapshot {
        GraphSnapshot::new(
            self.tick,
            self.nodes.values().cloned(),
            self.edges_in(LayerFilter::Only(layer)).cloned(),
        )
    }

    /// Neighbors of `node` through edges admitted by `filter`, in edge-id
    /// order.
    pub fn neighbors(
        &self,
        node: &NodeId,
        filter: LayerFilter,
        direction: Direction,
    ) -> Result<Vec<Neighbor<'_>>, GraphError> {
        if !self.nodes.contains_key(node) {
            return Err(GraphError::UnknownNode(node.clone()));
        }
        let mut ids: Vec<&EdgeId> = Vec::new();
        for layer in LayerKind::ALL {
            if !filter.admits(layer) {
                continue;
            }
            let adj = &self.layers[layer.index()];
            if matches!(direction, Direction::Out | Direction::Both) {
                ids.extend(adj.out.get(node).into_iter().flatten());
            }
            if matches!(direction, Direction::In | Direction::Both) {
                ids.extend(adj.inc.get(node).into_iter().flatten());
            }
        }
        ids.sort();
        Ok(ids
            .into_iter()
            .map(|id| {
                let edge = &self.edges[id];
                let other = if &edge.src == node { &edge.dst } else { &edge.src };
                Neighbor { edge, node: other }
            })
            .collect())
    }

    /// Outgoing edges of `node` in one layer, in edge-id order.
    pub fn out_edges(&self, node: &NodeId, layer: LayerKind) -> impl Iterator<Item = &EdgeRecord> {
        self.layers[layer.index()]
            .out
            .get(node)
            .into_iter()
            .flatten()
            .map(|id| &self.edges[id])
    }

    pub fn in_edges(&self, node: &NodeId, layer: LayerKind) -> impl Iterator<Item = &EdgeRecord> {
        self.layers[layer.index()]
            .inc
            .get(node)
            .into_iter()
            .flatten()
            .map(|id| &self.edges[id])
    }

    /// Dense index of nodes in id order, used by the matrix algorithms.
    pub fn node_index(&self) -> BTreeMap<&NodeId, usize> {
        self.nodes.keys().enumerate().map(|(i, id)| (id, i)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::WeightVector;
    use alloc::format;

    fn star() -> GraphSnapshot {
        let mut nodes = alloc::vec![EntityNode::new("C", EntityKind::Warehouse)];
        let mut edges = Vec::new();
        for i in 0..4 {
            nodes.push(EntityNode::new(format!("L{i}").as_str(), EntityKind::Distributor));
            edges.push(EdgeRecord::material(
                format!("e{i}").as_str(),
                "C",
                format!("L{i}").as_str(),
                WeightVector::default(),
            ));
        }
        edges.push(EdgeRecord::new(
            "f0",
            "L0",
            "C",
            LayerKind::Financial,
            WeightVector::default(),
        ));
        GraphSnapshot::new(0, nodes, edges)
    }

    #[test]
    fn isolated_node_has_no_neighbors() {
        let s = GraphSnapshot::new(0, [EntityNode::new("A", EntityKind::Supplier)], []);
        let n = s.neighbors(&"A".into(), LayerFilter::All, Direction::Both).unwrap();
        assert!(n.is_empty());
    }

    #[test]
    fn star_center_lists_out_edges_in_id_order() {
        let s = star();
        let n = s.neighbors(&"C".into(), LayerFilter::All, Direction::Out).unwrap();
        let ids: Vec<&str> = n.iter().map(|n| n.edge.id.as_str()).collect();
        assert_eq!(ids, ["e0", "e1", "e2", "e3"]);
    }

    #[test]
    fn material_filter_excludes_financial_edges() {
        let s = star();
        let all = s.neighbors(&"C".into(), LayerFilter::All, Direction::Both).unwrap();
        let mat = s
            .neighbors(&"C".into(), LayerKind::Material.into(), Direction::Both)
            .unwrap();
        assert_eq!(all.len(), 5);
        assert_eq!(mat.len(), 4);
        assert!(mat.iter().all(|n| n.edge.layer == LayerKind::Material));
    }

    #[test]
    fn unknown_node_is_an_error() {
        let s = star();
        assert_eq!(
            s.neighbors(&"Z".into(), LayerFilter::All, Direction::Out).unwrap_err(),
            GraphError::UnknownNode("Z".into())
        );
    }
}
